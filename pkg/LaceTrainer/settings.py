import logging
import os
from collections import OrderedDict, namedtuple
from pathlib import Path

from LaceTrainer.errors import ConfigError
from LaceTrainer.i18n import _
from LaceTrainer.storage import read_json

logger = logging.getLogger(__name__)

TRAINING_FIELDS = ('lambda_', 'sup_threshold', 'learning_rate', 'epochs', 'seed', 'hidden_size', 'embedding_dim',
                   'consistency_enabled', 'adaptive', 'grad_clip')
PATH_FIELDS = ('train', 'dev', 'test', 'embeddings', 'checkpoint', 'report', 'runs_db')

default_settings = OrderedDict()
settings = OrderedDict()


def add_setting(name, nice_name, kind, default, check=None, key=None):
    """Register a tunable. key is its spelling in config files and reports (defaults to name)."""
    settings[name] = dict(nice_name=nice_name, kind=kind, default=default, check=check, key=key or name)
    default_settings[name] = default


def _positive(x):
    return x > 0


def _non_negative(x):
    return x >= 0


def _unit(x):
    return 0 <= x <= 1


def _positive_or_off(x):
    return x is None or x > 0


def _even(x):
    return x >= 2 and x % 2 == 0


add_setting('lambda_', _('supervised weight lambda'), float, 0.05, _unit, key='lambda')
add_setting('sup_threshold', _('adaptive supervised loss threshold'), float, 0.2, _non_negative)
add_setting('learning_rate', _('learning rate'), float, 0.1, _positive)
add_setting('epochs', _('epochs'), int, 30, lambda x: x >= 1)
add_setting('seed', _('seed'), int, 13)
add_setting('hidden_size', _('hidden size'), int, 8, _even)
add_setting('embedding_dim', _('embedding dimension'), int, 16, _positive)
add_setting('consistency_enabled', _('consistency loss'), bool, True)
add_setting('adaptive', _('adaptive loss'), bool, True)
add_setting('grad_clip', _('gradient norm clip'), float, 5.0, _positive_or_off)
add_setting('label_fraction', _('labeled fraction per topic'), float, 1.0, lambda x: 0 < x <= 1)
add_setting('use_unlabeled', _('reuse demoted paragraphs as unlabeled'), bool, False)
add_setting('trainable_embeddings', _('trainable embeddings'), bool, None)
for path_name in PATH_FIELDS:
    add_setting(path_name, _('{name} path').format(name=path_name), str,
                os.getenv('LACE_RUNS_DB') if path_name == 'runs_db' else None)


class TrainingConfig(namedtuple('TrainingConfig', TRAINING_FIELDS)):
    __slots__ = ()


class RunConfig(namedtuple('RunConfig', list(settings))):
    __slots__ = ()

    def training(self):
        return TrainingConfig(**{name: getattr(self, name) for name in TRAINING_FIELDS})


def _coerce(name, value):
    setting = settings[name]
    kind = setting['kind']
    if value is None:
        if setting['default'] is None or kind is float and setting['check'] is _positive_or_off:
            return None
        raise ConfigError(_('{nice_name} may not be empty').format(nice_name=setting['nice_name']))
    try:
        if kind is bool:
            if not isinstance(value, bool):
                raise ValueError(value)
        elif kind is int:
            if isinstance(value, bool) or int(value) != value:
                raise ValueError(value)
            value = int(value)
        else:
            value = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(_('{nice_name} must be a {kind}, got {value!r}').format(
            nice_name=setting['nice_name'], kind=kind.__name__, value=value))
    if setting['check'] is not None and not setting['check'](value):
        raise ConfigError(_('{nice_name} is out of range: {value!r}').format(
            nice_name=setting['nice_name'], value=value))
    return value


def load_settings(path=None, overrides=None):
    """Defaults, then the JSON config file, then non-None overrides (command line flags win)."""
    values = OrderedDict(default_settings)
    if path:
        try:
            file_values = read_json(path)
        except (OSError, ValueError) as e:
            raise ConfigError(_('cannot read config file {path}: {error}').format(path=path, error=e))
        if not isinstance(file_values, dict):
            raise ConfigError(_('config file {path} must hold a JSON object').format(path=path))
        by_key = {setting['key']: name for name, setting in settings.items()}
        for key, value in file_values.items():
            if key not in by_key:
                raise ConfigError(_('unknown setting {key!r} in {path}').format(key=key, path=path))
            values[by_key[key]] = value
    for name, value in (overrides or {}).items():
        if name not in settings:
            raise ConfigError(_('unknown setting {key!r}').format(key=name))
        if value is not None:
            values[name] = value
    return RunConfig(**{name: _coerce(name, value) for name, value in values.items()})


def training_config(**overrides):
    """TrainingConfig from the registered defaults, mostly for library use and tests."""
    return load_settings(overrides=overrides).training()


def as_dict(cfg):
    """Settings under their config file keys, in registration order."""
    return OrderedDict((settings[name]['key'], value) for name, value in cfg._asdict().items()
                       if name in settings)


def check_output(name, path, directory=False):
    """Fail early unless path can be created or overwritten (as a file, or as a directory when directory is set)."""
    path = Path(path)
    if path.exists() and path.is_dir() != directory:
        raise ConfigError(_('{name} {path} is {what}').format(
            name=name, path=path, what=_('a file') if directory else _('a directory')))
    parent = path.absolute().parent
    while not parent.exists():
        parent = parent.parent
    if not parent.is_dir() or not os.access(str(parent), os.W_OK):
        raise ConfigError(_('cannot create {name} {path}: {parent} is not a writable directory').format(
            name=name, path=path, parent=parent))


def check_paths(cfg, required=()):
    for name in required:
        if not getattr(cfg, name):
            raise ConfigError(_('missing required path: {name}').format(name=name))
    for name in ('train', 'dev', 'test', 'embeddings'):
        path = getattr(cfg, name)
        if path and not Path(path).is_file():
            raise ConfigError(_('{name} file not found: {path}').format(name=name, path=path))
    for name in ('checkpoint', 'report', 'runs_db'):
        path = getattr(cfg, name)
        if path:
            check_output(name, path)
