# Grid package
