import gettext
import os

from flufl.i18n import registry

from LaceTrainer.constants import LOCALE_FOLDER, LOCALE_NAME


def catalog(language_code=None):
    """Message catalog for language_code, or for LACE_LANG when none is asked for.

    Languages without a compiled catalog under Locales get the untranslated source strings.
    """
    language_code = language_code or os.getenv('LACE_LANG')
    return gettext.translation(LOCALE_NAME, str(LOCALE_FOLDER), [language_code] if language_code else None,
                               fallback=True)


catalog.name = LOCALE_NAME
application = registry.register(catalog)
# noinspection PyProtectedMember
_ = application._
