"""
Pydantic models of the simulator.
"""
