"""Plan-service authentication"""
