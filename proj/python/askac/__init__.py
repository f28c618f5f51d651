from ._askac import *  # noqa: F401,F403
from ._askac import __doc__  # noqa: F401
