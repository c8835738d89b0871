"""Service layer: one module per analytic / simulation concern"""
