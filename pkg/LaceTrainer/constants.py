import os
from enum import IntEnum
from pathlib import Path

__version__ = "1.0.0"
LOCALE_FOLDER = Path(__file__).parent / 'Locales'
LOCALE_NAME = 'LaceTrainer'
RUNS_DB_FILE = Path(os.getenv('LACE_RUNS_DB', 'runs.json'))

CHECKPOINT_FORMAT = 'lace-checkpoint'
CHECKPOINT_VERSION = 1

# Canonical order; every 4-vector in the package is laid out like this and argmax ties go to the earlier label
# noinspection PyArgumentList
StateChange = IntEnum('StateChange', 'MOVE CREATE DESTROY NONE', start=0)
NUM_CHANGES = len(StateChange)
# Labels that count as positives and may appear in a summary set
ACTIONS = (StateChange.MOVE, StateChange.CREATE, StateChange.DESTROY)

# Synthetic corpus vocabulary. Each action has its own verbs so the label is recoverable from the sentence.
SYNTHETIC_VERBS = {
    StateChange.MOVE: ['moves', 'travels', 'flows', 'drifts'],
    StateChange.CREATE: ['forms', 'appears', 'emerges', 'develops'],
    StateChange.DESTROY: ['vanishes', 'decays', 'dissolves', 'perishes'],
    StateChange.NONE: ['rests', 'waits', 'remains', 'stays'],
}
SYNTHETIC_ENTITIES = ['water', 'oxygen', 'sugar', 'carbon dioxide', 'seed', 'tree', 'rock', 'magma',
                      'ice', 'cloud', 'energy', 'glucose', 'soil', 'root', 'leaf', 'light']
SYNTHETIC_DETERMINERS = ['the', 'some', 'a little']
SYNTHETIC_PLACES = ['into the leaf', 'near the surface', 'inside the cell', 'over time', 'in the ground',
                    'after a while', 'through the stem']
