"""Speaker-accent recognition from mean MFCC vectors."""

__version__ = "0.1.0"
