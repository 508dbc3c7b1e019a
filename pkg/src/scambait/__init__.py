"""scambait: keep mail scammers busy with generated, guarded, delayed replies."""

__version__ = "0.1.0"
