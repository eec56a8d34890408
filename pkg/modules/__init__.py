# SegTrack MOTS networks
