"""Intrinsic mollification of non-regular Riemannian metrics."""
