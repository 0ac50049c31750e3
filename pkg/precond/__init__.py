# Preconditioners package
