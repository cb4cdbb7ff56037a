"""Test package for the perchsim simulator and MCP server."""
