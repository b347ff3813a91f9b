"""Profiled side-channel attacks with mixup augmentation."""
