# Krylov solvers package
