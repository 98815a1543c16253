"""Near-field XL-MIMO channel estimation and joint channel/data detection.

Modules
-------
geometry    ULA geometry, near-field array response, channel draws, beam domain
signals     QAM, pilot design, frames and the noisy received signal
dictionary  polar grids and steering-vector dictionaries
initial     SOMP + UE-path pairing initial estimate, LS and P-SOMP baselines
jcde        expectation-propagation joint channel and data estimation
metrics     NMSE, BER and reference detectors
flops       operation counters and closed-form costs
harness     Monte Carlo sweeps, CSV and manifest output
config      flat key=value configuration
cli         ``nfjcde`` command line
"""

__version__ = "0.1.0"
