"""Rod homogenization - homogenized von Kármán rod models from microstructured 3D elasticity."""

__all__: list[str] = []
