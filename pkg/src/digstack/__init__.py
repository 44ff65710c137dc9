"""digstack: two-tier IoT service discovery.

A global lookup core (digcovery) indexes service pointers published by
distributed local directories (digrectories), which in turn learn about
smart objects over a lightweight mDNS profile sized for 127-byte frames.
"""

__version__ = "0.1.0"
