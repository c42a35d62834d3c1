"""Finite-state controller synthesis for LTL objectives on POMDPs"""
