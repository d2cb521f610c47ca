"""Physical-activity summary measures from accelerometer exports."""

__version__ = "0.1.0"
