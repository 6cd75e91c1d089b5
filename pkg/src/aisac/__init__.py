"""UAV adaptable ISAC: scheduling, beamforming and trajectory planning."""
