"""Identify helicopter arrival tracks from surveillance data.

A 1-D convolutional autoencoder is trained on windows of known-helicopter
arrivals; tracks whose reconstruction error stays below a calibrated
threshold and whose runway-alignment score stays low are flagged as
helicopters.  Results can be checked against an aircraft registration
table and a rule-based type lookup.
"""

__version__ = "0.1.0"
