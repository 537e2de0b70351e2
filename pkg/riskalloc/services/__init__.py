# Services package: distributions, Monte Carlo indicators and allocation solvers
