# Natural-HNN hyperedge disentanglement toolkit
# Main package initialization
