from .detection_metrics import *
