# DP-IADMM Federated Learning Package
