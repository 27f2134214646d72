"""From-scratch drum classification with Parallel-Conv networks and a fog placement simulator."""

__version__ = "0.1.0"
