"""Shared configuration models, solvers and output helpers for rod homogenization runs."""

__all__: list[str] = []
