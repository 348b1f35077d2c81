"""Discrete-event harness: network, clients, workloads, faults and scenarios."""
