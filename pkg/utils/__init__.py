"""
Utils package for SegTrack MOTS
"""
