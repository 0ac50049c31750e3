# Partition package
