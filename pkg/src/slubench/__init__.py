"""slubench: a desk-scale benchmarking workbench for spoken-language-
understanding intent classification over text, confusion-network, and
multimodal input representations."""

__version__ = "0.1.0"
