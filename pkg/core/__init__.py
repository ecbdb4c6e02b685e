from . import log_maker
from . import config_manager
from . import errors
from . import model
from . import matroids
from . import submodular
from . import transversal
from . import greedy
from . import stoch_cr
from . import combined
from . import oracles
from . import schemas
from . import threads
