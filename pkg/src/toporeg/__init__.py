"""Topologically penalized regression on graph-Laplacian eigenbases."""
