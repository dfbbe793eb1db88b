from .interval import *
