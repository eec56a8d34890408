# SegTrack MOTS models
