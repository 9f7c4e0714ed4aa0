"""spnet - stereographic projection networks for 3D shape classification and retrieval"""

__version__ = "0.1.0"
