"""Model bases shared by every attrnet package."""
