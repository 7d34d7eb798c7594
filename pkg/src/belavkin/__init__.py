"""Quantum trajectories and Belavkin filters for a laser-driven two-level atom.

Submodules
----------
algebra       superoperators in column-stacking form
lindblad      models, generators, unraveling splits, master-equation oracle
davies        counting records, Davies weights and the counting filter
homodyne      oscillator-mixed counting and the diffusive filter
ensemble      deterministic parallel ensembles
ito_symbolic  symbolic quantum Itô calculus and filter derivations
stats         martingale and agreement statistics
io, cli       configuration, file formats and the command line
"""

from .errors import *  # noqa: F401,F403
from .lindblad import (  # noqa: F401
    EXCITED,
    GROUND,
    HomodyneSpec,
    LindbladModel,
    SideCounting,
    build_liouvillian,
    make_model,
    master_path,
    propagate_master,
    resonance_fluorescence,
    spontaneous_decay,
    split_unraveling,
)

__version__ = "0.1.0"
