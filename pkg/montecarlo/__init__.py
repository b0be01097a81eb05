"""Monte Carlo plumbing - reproducible streams and block statistics"""
