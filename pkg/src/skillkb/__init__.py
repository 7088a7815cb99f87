"""Skill knowledge base construction and retrieval for tool-using agents."""
