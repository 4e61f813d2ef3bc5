"""maskboard: classify forum posts, explain predictions by phrase occlusion,
and compare explanation themes across corpora."""

__version__ = "0.1.0"
