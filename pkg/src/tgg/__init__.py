"""Episodic graph-based zero- and few-shot classification."""
