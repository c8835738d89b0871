"""Empty test init file"""
