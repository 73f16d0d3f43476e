"""Compare the restricted null space of a fractional power with the local gamma = 1 control."""

from fracext import MetricField, PeriodicGrid, assemble_operator
from fracext.ucp import antilocality_nullspace

grid = PeriodicGrid(1, 64)
metric = MetricField.identity(grid)
spectral = assemble_operator(metric, method="spectral")
fd = assemble_operator(metric, method="fd")

for gamma, op, label in ((0.5, spectral, "spectral"), (1.5, spectral, "spectral"), (1.0, fd, "fd")):
    for size in (5, 8, 16):
        rep = antilocality_nullspace(op, gamma, size)
        print(f"gamma = {gamma:3.1f} ({label:8s}) |W| = {size:2d}  null dimension = {rep.dimension}")
