"""Cooperative spectrum sensing over Nakagami-m fading."""
