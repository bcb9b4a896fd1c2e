"""Master/worker remote evaluation over framed stdio channels.

The master launches worker processes from command templates (locally or
through a remote shell), exports bindings to them, and dispatches named
tasks synchronously.  A small linear-algebra task pack and a demo pipeline
(distributed tridiagonal product plus eigenvalues) ship with it.
"""

__version__ = "0.1.0"

PROTOCOL_VERSION = 1
