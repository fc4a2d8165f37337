"""Maze simulation, diffusion planning, guidance, execution and evaluation"""
