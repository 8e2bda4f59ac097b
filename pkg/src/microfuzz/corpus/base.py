from ..registry import Registry

REGISTRY = Registry("corpus")
