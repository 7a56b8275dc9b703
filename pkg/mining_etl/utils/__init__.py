"""
Mining ETL Utilities Package

This package contains utility modules for the mining ETL pipeline including:
- Bitcoin halving calendar functionality
"""
