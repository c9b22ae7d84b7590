from .numcore import *
from .gradcheck import finite_difference_check
