# Panel loading, deseasonalization and artifact I/O
