"""Convex relaxations of AC optimal power flow and their tightness."""
