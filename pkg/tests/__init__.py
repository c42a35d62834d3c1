"""Tests for the ltl_fsc package"""
