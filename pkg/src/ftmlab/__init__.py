"""ftmlab: Wi-Fi FTM ranging simulator and sensor-aided learning workbench."""

__version__ = "0.1.0"
