# Shared utilities: errors, logging, configuration, random streams
