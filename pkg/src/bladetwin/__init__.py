"""Digital twin of hammer-impact testing on a scaled wind-turbine blade.

Modules
-------
fem        two-plane beam model, damage laws and modal solution
hammer     impact transients and synthetic test campaigns
dsp        truncation, Butterworth filtering, FRFs, peaks and damping
features   per-trial features and ANOVA ranking
ml         normalisation, splits and the four-classifier bench
datastore  on-disk dataset layout and CSV persistence
cli        the ``bladetwin`` command
"""

__version__ = "0.1.0"
