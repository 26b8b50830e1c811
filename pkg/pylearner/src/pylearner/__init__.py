"""Companion tools for the surplus toolkit, living on the other side of its
process boundary: a JSON-lines learner server (pylearner.server) and a
pretty-printer for report JSON (pylearner.report).

Nothing here imports surplus.  The two packages talk only through the wire
protocol, the command line, and report files.
"""

__version__ = "0.1.0"
