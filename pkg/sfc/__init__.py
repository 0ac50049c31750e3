# Space-filling curves package
