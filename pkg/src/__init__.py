# Chemoreact: flux-limited chemotaxis-reaction simulator and checks
