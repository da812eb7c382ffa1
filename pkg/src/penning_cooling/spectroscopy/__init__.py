"""Spectrum synthesis, coherent probe dynamics and thermometry fits."""
from .fitting import FitConfig, FitResult, FitWarning, HeatingFit, average_fits, fit_sideband_spectrum, heating_rate_fit
from .hamiltonian import (IonState, NormDriftError, Observable, ProbePulse, TwoIonState, check_lamb_dicke,
                          detection_observable, evolve_ions, evolve_two_ion, frame_hamiltonian)
from .spectra import (BroadeningRegion, CoherentModel, SidebandOverlapWarning, SpectrumPoint, apply_broadening,
                      convolve_gaussian, default_regions, gaussian_smooth, rabi_lineshape, read_spectrum_csv,
                      rotational_sideband_annotations, simulate_spectrum_thermal, synthesize_spectrum,
                      thermal_weights, window_grid, write_spectrum_csv)
