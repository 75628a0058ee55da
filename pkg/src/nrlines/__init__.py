"""Transmission lines coupled through ideal nonreciprocal elements.

Modules
-------
netlist      JSON circuit descriptions and field rescaling
nrcore       scattering/admittance/impedance algebra of lossless NR elements
spectral     doubled-space eigenbasis for semi-infinite lines
finite       discrete spectra of finite lines with a junction boundary
hamiltonian  mode-space reduction, quantized model, Lamb shift, time reversal
tdsim        leapfrog time-domain integrator used as an independent oracle
cli          command-line front end writing CSV/JSON artifacts
"""

__version__ = "0.1.0"
