"""poolkit: build, judge, and stress-test pooled ad-hoc IR test collections."""

__version__ = "0.1.0"
