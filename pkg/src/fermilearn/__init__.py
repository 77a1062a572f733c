"""fermilearn: simulator and solvers for learning external potentials of
continuous-space free fermions at desk scale.

Submodules follow the pipeline: grid geometry and profiles (:mod:`.grid`),
potential families (:mod:`.potentials`), split-step dynamics
(:mod:`.dynamics`), measurement-probability backends (:mod:`.backends`),
the sampling protocol (:mod:`.measurement`), and the Coulomb / linear-basis
reconstruction solvers (:mod:`.coulomb`, :mod:`.basis`).
"""

__version__ = "0.1.0"
