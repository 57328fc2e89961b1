# rrtstar package
