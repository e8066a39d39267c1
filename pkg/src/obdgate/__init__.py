"""obdgate: simulation harness for a context-aware vehicular OBD-II gateway.

Subsystems:

* :mod:`obdgate.obd` -- PID catalog, frames, linear codec
* :mod:`obdgate.vehicle` -- trace-driven virtual vehicle and bus arbitration
* :mod:`obdgate.policy` -- context recognition and attribute-based policies
* :mod:`obdgate.gateway` -- discrete-event mediation core (sessions, rate
  limiting, app lifecycle, probes)
* :mod:`obdgate.privacy` -- speed-stream privacy transforms and utility metrics
* :mod:`obdgate.roadnet` / :mod:`obdgate.pathing` -- road networks and the
  destination-inference attack used to score the transforms
* :mod:`obdgate.partition` -- edge/cloud pipeline placement cost simulator
* :mod:`obdgate.store` -- HTTP app store / alert feed service
* :mod:`obdgate.scenario` / :mod:`obdgate.cli` -- scenario runner and CLI
"""

__version__ = "0.1.0"

from .obd import PidCatalog, PidSpec, load_default_catalog

__all__ = ["PidCatalog", "PidSpec", "load_default_catalog", "__version__"]
