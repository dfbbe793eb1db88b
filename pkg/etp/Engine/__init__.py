from .tensor import Tensor, Parameter, Module, as_tensor, uniform_init, check_shape
from .functional import *
from .layers import Linear, GRUCell, NonLocalBlock
from .optim import OptimizerState, sgd_step
from .gradcheck import grad_check, GradCheckReport
