"""Desk-scale toolkit for distributed opportunistic scheduling with
distributed control: optimal-configuration solvers, a mini-slot contention
simulator, per-station PI controllers with punishment, and the selfish
strategies used to probe them."""

__version__ = "0.1.0"
