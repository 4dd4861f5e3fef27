from .utils import *
from .grid1d import *
from .conjugate import *
from .hopflax import *
from .paths import *
from .pathwise import *
from .estimates import *
from .experiments import *
from .cli import *
