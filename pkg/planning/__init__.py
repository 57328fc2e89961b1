# planning packages, one per pipeline stage
