from .errors import *
from .utils import *
