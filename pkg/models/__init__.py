"""Pydantic models: pipeline config, goal specs and plan-service bodies"""
