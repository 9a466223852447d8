"""slab: a numerical laboratory for smoothing estimates of dispersive
equations with structured weights.

Modules
-------
symbols   homogeneous symbols, duals, canonical map, structure symbols
grid      periodic grids, discrete Fourier transforms, cutoffs
quantize  multipliers, separable pseudodifferential operators, conjugations
evolve    spectral propagators and regularized resolvents
estimates smoothing-norm sweeps, limiting absorption, restriction, duality
cli       the ``slab`` command-line front end
"""

__version__ = "0.1.0"
