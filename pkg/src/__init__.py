# Proofplan
