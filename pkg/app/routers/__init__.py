# Routers package initialization
