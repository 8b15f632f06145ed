from ._vidrest import *
