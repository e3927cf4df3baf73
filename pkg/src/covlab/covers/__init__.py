"""Delta-covers: chain graphs, lifting and spectra."""
